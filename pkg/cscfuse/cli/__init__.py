"""CLI module for cscfuse."""
