# tdlab/operations/__init__.py
"""Numerical building blocks: MDP geometry, exact solvers, samplers, learners and stepsize rules."""
