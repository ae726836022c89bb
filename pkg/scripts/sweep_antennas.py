"""SCNR and SINR versus antennas per AP."""

from sweep_common import main

if __name__ == "__main__":
    main("antennas", __doc__)
