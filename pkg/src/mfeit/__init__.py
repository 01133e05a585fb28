"""Multi-frequency EIT tissue-fraction reconstruction.

Forward modeling with the complete electrode model, adjoint Jacobians, a
ridge-regression fraction initializer, and a proximal regularized
Gauss-Newton solver with simplex constraints handled by entropic mirror
descent.
"""

from .fest import FestProblem, fest_reference, fest_solve, noser_estimate
from .forward import (CurrentPatternSet, ForwardSolution, adjacent_patterns,
                      assemble_cem_system, forward_map_phi, solve_forward)
from .fractions import (SpectraSet, fractions_to_conductivity,
                        no_overlap_spectra, overlap_spectra, row_softmax,
                        validate_gamma)
from .jacobians import (GaussNewtonState, PhiJacobian, build_state,
                        conductivity_jacobian, gradient_step, phi_jacobian)
from .mesh import (ElectrodeSetup, GraphMatrices, Mesh, build_disk_mesh,
                   graph_matrices, triangle_areas)
from .metrics import ErrorReport, aggregate, err_fraction, err_sigma
from .phantoms import (DatasetSample, PhantomSpec, rasterize_fractions,
                       sample_phantom, simulate_sample)
from .prgn import (EmdaConfig, PrgnConfig, ReconstructionResult,
                   default_initial_fractions, emda_prox, entropy,
                   entropy_conjugate, run_fr_prgn)

__version__ = "0.1.0"
