# Shared utilities: errors, logging setup and the run-config schema
