#pragma once

#include "spreadvol/calibration.hpp"
#include "spreadvol/coupled_wave.hpp"
#include "spreadvol/csv.hpp"
#include "spreadvol/error.hpp"
#include "spreadvol/market_data.hpp"
#include "spreadvol/optimizer.hpp"
#include "spreadvol/random.hpp"
#include "spreadvol/report.hpp"
#include "spreadvol/scaling.hpp"
#include "spreadvol/spread_models.hpp"
#include "spreadvol/statistics.hpp"
#include "spreadvol/version.hpp"
