// avseg.hpp - umbrella header.
#pragma once

#include "avseg/avsc.hpp"
#include "avseg/gradcheck.hpp"
#include "avseg/instance.hpp"
#include "avseg/io.hpp"
#include "avseg/losses.hpp"
#include "avseg/manifest.hpp"
#include "avseg/mask.hpp"
#include "avseg/matching.hpp"
#include "avseg/metrics.hpp"
#include "avseg/synth.hpp"
