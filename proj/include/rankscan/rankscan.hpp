// rankscan/rankscan.hpp: everything.
#pragma once

#include "rankscan/calibration.hpp"
#include "rankscan/errors.hpp"
#include "rankscan/experiments.hpp"
#include "rankscan/identification.hpp"
#include "rankscan/interval.hpp"
#include "rankscan/models.hpp"
#include "rankscan/net.hpp"
#include "rankscan/parallel.hpp"
#include "rankscan/random.hpp"
#include "rankscan/scan.hpp"
#include "rankscan/tail_bounds.hpp"
