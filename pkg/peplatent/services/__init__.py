"""Numerical and data services"""
