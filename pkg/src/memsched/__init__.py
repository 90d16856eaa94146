"""Scheduling over unprobed Markov ON/OFF channels with ACK/NACK feedback."""

__version__ = "0.1.0"
