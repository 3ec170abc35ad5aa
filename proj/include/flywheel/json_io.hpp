#pragma once

// nlohmann::json bindings for the record types. Kept out of the module headers
// so that only translation units doing I/O pay for json.hpp.

#include "flywheel/env_types.hpp"
#include "flywheel/taskgraph.hpp"
#include "flywheel/trajectory.hpp"
#include "flywheel/transport.hpp"
#include "json.hpp"

namespace flywheel {
void to_json(nlohmann::json& j, DeviceFamily d);
void from_json(const nlohmann::json& j, DeviceFamily& d);
}  // namespace flywheel

namespace flywheel::taskgraph {
void to_json(nlohmann::json& j, const TaskPath& p);
void from_json(const nlohmann::json& j, TaskPath& p);
void to_json(nlohmann::json& j, const ComposedTask& t);
void from_json(const nlohmann::json& j, ComposedTask& t);
}  // namespace flywheel::taskgraph

namespace flywheel::virtualenv {
void to_json(nlohmann::json& j, const Bounds& b);
void from_json(const nlohmann::json& j, Bounds& b);
void to_json(nlohmann::json& j, const ObservedElement& e);
void from_json(const nlohmann::json& j, ObservedElement& e);
void to_json(nlohmann::json& j, const Observation& o);
void from_json(const nlohmann::json& j, Observation& o);
void to_json(nlohmann::json& j, const Action& a);
void from_json(const nlohmann::json& j, Action& a);
void to_json(nlohmann::json& j, const Clause& c);
void from_json(const nlohmann::json& j, Clause& c);
void to_json(nlohmann::json& j, const CheckpointPredicate& p);
void from_json(const nlohmann::json& j, CheckpointPredicate& p);
}  // namespace flywheel::virtualenv

namespace flywheel::transport {
void to_json(nlohmann::json& j, const GenerationRecord& r);
void from_json(const nlohmann::json& j, GenerationRecord& r);
}  // namespace flywheel::transport

namespace flywheel::trajectory {
void to_json(nlohmann::json& j, const RoleAnnotation& r);
void from_json(const nlohmann::json& j, RoleAnnotation& r);
void to_json(nlohmann::json& j, const Step& s);
void from_json(const nlohmann::json& j, Step& s);
}  // namespace flywheel::trajectory
