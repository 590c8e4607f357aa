"""Classifier tests"""
