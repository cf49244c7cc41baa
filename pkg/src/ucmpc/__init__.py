"""Uncertainty-compensated MPC: L1 adaptive control, PPG gain design and constraint tightening."""
