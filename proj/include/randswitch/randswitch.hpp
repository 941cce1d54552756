#pragma once

#include "randswitch/control.hpp"
#include "randswitch/converter.hpp"
#include "randswitch/dist.hpp"
#include "randswitch/error.hpp"
#include "randswitch/io.hpp"
#include "randswitch/rng.hpp"
#include "randswitch/spectrum.hpp"
#include "randswitch/switching.hpp"
