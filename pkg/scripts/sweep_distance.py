"""SCNR and SINR versus user-to-target distance (m)."""

from sweep_common import main

if __name__ == "__main__":
    main("distance", __doc__)
