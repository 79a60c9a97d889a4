"""Workspace, seeding and thread-pool utilities"""
