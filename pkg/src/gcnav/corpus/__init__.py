"""Hand-authored worlds and episodes shipped with the package."""
import glob
import os


def corpus_dir() -> str:
    return os.path.dirname(os.path.abspath(__file__))


def corpus_files() -> list:
    return sorted(glob.glob(os.path.join(corpus_dir(), "*.json")))
