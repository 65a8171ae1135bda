# Configuration file for the Sphinx documentation builder.
# https://www.sphinx-doc.org/en/master/usage/configuration.html
import os
import sys

from recommonmark.parser import CommonMarkParser

rootdir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "..")
sys.path.insert(0, rootdir)

project = "mcdenoise"
copyright = "2020, mcdenoise developers"
author = "mcdenoise developers"
release = "0.1.0a1"

extensions = [
    "sphinx_rtd_theme",
    "recommonmark",
    "sphinx.ext.autodoc",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
    "sphinx.ext.viewcode",
]

templates_path = ["_templates"]
exclude_patterns = []

html_theme = "sphinx_rtd_theme"
html_static_path = []
html_show_sourcelink = False

source_parsers = {".md": CommonMarkParser}
source_suffix = [".rst", ".md"]

autodoc_mock_imports = ["nvtx"]
