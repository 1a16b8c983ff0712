#pragma once

#include <json.hpp>

namespace kbsql {
using json = nlohmann::json;
}
