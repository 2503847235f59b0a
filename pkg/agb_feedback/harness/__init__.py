"""Scenario configuration, feedback methods, runner, result files and CLI"""
