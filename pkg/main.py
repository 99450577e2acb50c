"""
Entry point for the sigma2lab command line.

This module forwards to the laboratory's CLI.
"""

from sigma2lab.main import main

if __name__ == "__main__":
    main()
