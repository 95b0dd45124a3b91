#pragma once

#include "flowcast/array.hpp"
#include "flowcast/attention.hpp"
#include "flowcast/autodiff.hpp"
#include "flowcast/calendar.hpp"
#include "flowcast/config.hpp"
#include "flowcast/embedding.hpp"
#include "flowcast/gbrt.hpp"
#include "flowcast/harness.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/model.hpp"
#include "flowcast/optim.hpp"
#include "flowcast/recurrent.hpp"
#include "flowcast/report.hpp"
#include "flowcast/series.hpp"
#include "flowcast/time.hpp"
