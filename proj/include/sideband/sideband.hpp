#pragma once

#include "sideband/params.hpp"
#include "sideband/closed_form.hpp"
#include "sideband/harmonic_balance.hpp"
#include "sideband/langevin.hpp"
#include "sideband/spectral.hpp"
#include "sideband/io.hpp"
#include "sideband/config.hpp"
#include "sideband/cli.hpp"
