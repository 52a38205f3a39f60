"""Test package for evm_milne."""
