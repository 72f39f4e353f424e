"""
Subcommand Package
Each module registers its subcommands on the top-level parser.
"""
