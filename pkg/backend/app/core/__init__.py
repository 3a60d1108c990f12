"""SyntaxNMT - Core Module (settings, logging, errors)"""
