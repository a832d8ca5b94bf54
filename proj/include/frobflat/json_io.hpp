#pragma once

#include <json.hpp>

#include "frobflat/series.hpp"

namespace frobflat {

nlohmann::json series_json(const PowerSeries& f);
PowerSeries series_from(const nlohmann::json& j);
nlohmann::json map_json(const SeriesMap& m);
SeriesMap map_from(const nlohmann::json& j);

}  // namespace frobflat
