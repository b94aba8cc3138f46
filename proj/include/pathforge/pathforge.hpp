#pragma once

#include "pathforge/error.hpp"
#include "pathforge/text.hpp"
#include "pathforge/services.hpp"
#include "pathforge/http_client.hpp"
#include "pathforge/kg.hpp"
#include "pathforge/reasoning.hpp"
#include "pathforge/rewards.hpp"
#include "pathforge/synthesis.hpp"
#include "pathforge/corpus.hpp"
#include "pathforge/grpo.hpp"
#include "pathforge/metrics.hpp"
#include "pathforge/mocks.hpp"
#include "pathforge/config.hpp"
