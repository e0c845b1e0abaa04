#pragma once

#include "fbnash/types.hpp"
#include "fbnash/parallel.hpp"
#include "fbnash/problem.hpp"
#include "fbnash/lq.hpp"
#include "fbnash/regression.hpp"
#include "fbnash/drivers.hpp"
#include "fbnash/fbsde.hpp"
#include "fbnash/hamiltonian.hpp"
#include "fbnash/adjoint.hpp"
#include "fbnash/verification.hpp"
#include "fbnash/equilibrium.hpp"
#include "fbnash/oracles.hpp"
