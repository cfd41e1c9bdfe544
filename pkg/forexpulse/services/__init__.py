"""Service modules shared by the pipeline stages."""
