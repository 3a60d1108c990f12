"""SyntaxNMT Backend Package"""
