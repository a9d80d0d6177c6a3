"""Spectral tools for the critical surface quasi-geostrophic equation on the unit disk.

Modules:

* ``specfun``: Bessel functions, their zeros, Gauss-Legendre rules;
* ``spectral``: the Dirichlet eigenbasis, collocation grids and transforms;
* ``besov``: dyadic and resolvent Littlewood-Paley blocks and Besov norms;
* ``operators``: derivatives, the SQG nonlinearity, commutators, Green's kernel;
* ``sqg``: the ETDRK2 solver, diagnostics and the Picard iteration;
* ``verify``: empirical constants of the functional inequalities;
* ``cli``: the ``sqgdisk`` command.
"""

__version__ = "0.1.0"
