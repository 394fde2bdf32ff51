"""Link-level OTFS/OFDM simulation with ML-driven waveform switching."""

__version__ = "0.1.0"
