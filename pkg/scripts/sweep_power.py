"""SCNR and SINR versus per-AP transmit power (dBW)."""

from sweep_common import main

if __name__ == "__main__":
    main("power", __doc__)
