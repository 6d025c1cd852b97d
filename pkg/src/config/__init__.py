"""Configuration loading utilities, logging setup and the default run YAML."""
