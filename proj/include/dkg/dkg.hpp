#pragma once

// Umbrella header for the library.

#include "dkg/config.hpp"
#include "dkg/decomposition.hpp"
#include "dkg/dirac_algebra.hpp"
#include "dkg/estimates.hpp"
#include "dkg/fft.hpp"
#include "dkg/field.hpp"
#include "dkg/field_io.hpp"
#include "dkg/lattice.hpp"
#include "dkg/random.hpp"
#include "dkg/resonance.hpp"
#include "dkg/solver.hpp"
#include "dkg/verify.hpp"
