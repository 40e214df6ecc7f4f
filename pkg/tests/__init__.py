# Tests package for fris
