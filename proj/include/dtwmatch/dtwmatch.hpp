#pragma once

#include "dtwmatch/errors.hpp"
#include "dtwmatch/core_math.hpp"
#include "dtwmatch/lane_pool.hpp"
#include "dtwmatch/match_result.hpp"
#include "dtwmatch/layout.hpp"
#include "dtwmatch/random.hpp"
#include "dtwmatch/local_search.hpp"
#include "dtwmatch/fragmentation.hpp"
#include "dtwmatch/comms.hpp"
#include "dtwmatch/tcp_transport.hpp"
#include "dtwmatch/distributed.hpp"
#include "dtwmatch/baseline_ucr.hpp"
#include "dtwmatch/series_io.hpp"
