"""Documentation"""
