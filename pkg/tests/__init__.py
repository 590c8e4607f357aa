"""Tests for fcmli_control"""
