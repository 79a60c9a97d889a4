"""Bundled reference tables"""
