# Service layer: cone algebra, solver, jacobi, doubling, potential theory and reporting
