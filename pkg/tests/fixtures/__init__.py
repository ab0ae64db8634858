# Shared test problems for lisinfer
