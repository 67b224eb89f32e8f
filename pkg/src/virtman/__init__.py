"""virtman: chart complexes glued along vector bundles.

Subpackages cover the expression language (`expr`), chart geometry
(`geometry`), complex validation (`complexes`), differential forms
(`forms`), bundles and Euler forms (`bundles`), quadrature
(`quadrature`), integration of virtual forms (`integrate`), circle
actions and localization (`equivariant`), finite-dimensional moduli
systems (`fredholm`), and the scene-file front end (`scene`, `cli`).
"""

__version__ = "0.1.0"
