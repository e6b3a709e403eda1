#pragma once

// Umbrella header: the whole library.

#include "trustbench/covert_dns.hpp"
#include "trustbench/defense.hpp"
#include "trustbench/errors.hpp"
#include "trustbench/exfil.hpp"
#include "trustbench/keystore.hpp"
#include "trustbench/messages.hpp"
#include "trustbench/scenario.hpp"
#include "trustbench/securegraph.hpp"
