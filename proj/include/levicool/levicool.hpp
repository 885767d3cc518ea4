#pragma once

#include "levicool/commands.hpp"
#include "levicool/config.hpp"
#include "levicool/cooling.hpp"
#include "levicool/errors.hpp"
#include "levicool/io.hpp"
#include "levicool/manifest.hpp"
#include "levicool/oracle.hpp"
#include "levicool/parallel.hpp"
#include "levicool/params.hpp"
#include "levicool/spectra.hpp"
#include "levicool/stochastic.hpp"
#include "levicool/units.hpp"
#include "levicool/validation.hpp"
