# Tests package for lisinfer
