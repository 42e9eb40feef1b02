#pragma once

#include "df/attention_engine.hpp"
#include "df/config.hpp"
#include "df/frame_layout.hpp"
#include "df/head_programming.hpp"
#include "df/head_types.hpp"
#include "df/kv_cache.hpp"
#include "df/numerics.hpp"
#include "df/parallel.hpp"
#include "df/profiler.hpp"
#include "df/rng.hpp"
#include "df/scenario.hpp"
#include "df/session.hpp"
#include "df/tensor_container.hpp"
