"""Federated-learning simulator for harmful-content text classification with central DP."""

__version__ = "0.1.0"
