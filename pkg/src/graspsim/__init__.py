"""graspsim: real-time grasp-driven soft tissue deformation toolkit.

Core pieces:
  mesh / shapes : tetrahedral meshes and synthetic geometry
  kelvinlet     : regularized Kelvinlet fields and multi-grasp coefficients
  fem           : linear-elastic and Mooney-Rivlin ground-truth solvers
  sampling      : grasp location / displacement distributions
  dataset       : FEM sample generation and on-disk format
  neural        : per-node surrogate network and training regimes
  metrics       : deformation-capture scoring
  cli / service : command line and interactive websocket server
"""

__version__ = "0.1.0"
