# pbcalc/core/__init__.py
# Settings and structured logging shared by every subsystem
