"""SyntaxNMT - Syntax-aware neural machine translation toolkit"""

__version__ = "1.0.0"
