"""
CLI entry point, when used as a module: `python -m epac`.

Useful for debugging in the IDEs (use the start-mode "Module", module "epac").
"""
from epac import cli

if __name__ == '__main__':
    cli.main()
