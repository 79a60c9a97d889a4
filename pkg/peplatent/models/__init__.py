"""Data models for schedules, networks, records, runs and reports"""
