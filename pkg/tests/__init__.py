"""Tests for colorflow."""
