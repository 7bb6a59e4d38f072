"""Dielectric-loss and coherence analysis for superconducting qubit devices.

Submodules: ``geometry``, ``mesh``, ``fieldsolve``, ``participation``,
``lossbudget``, ``coherence``, ``rb``, ``jjstats``, ``io``, ``pipeline``
and ``cli``.
"""

from __future__ import annotations

__version__ = "0.1.0"
