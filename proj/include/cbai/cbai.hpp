#pragma once
// Everything at once.

#include "cbai/algorithms.hpp"
#include "cbai/design.hpp"
#include "cbai/driver.hpp"
#include "cbai/elimination.hpp"
#include "cbai/estimation.hpp"
#include "cbai/harness.hpp"
#include "cbai/instance.hpp"
#include "cbai/instances.hpp"
#include "cbai/oracle.hpp"
