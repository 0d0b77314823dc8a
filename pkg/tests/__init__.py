"""Tests for cscfuse."""
