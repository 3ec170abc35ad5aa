#pragma once

#include <memory>

#include "flywheel/virtualenv.hpp"

namespace flywheel::virtualenv {

std::shared_ptr<const EnvironmentModel> make_doc_editor();
std::shared_ptr<const EnvironmentModel> make_list_browser();
std::shared_ptr<const EnvironmentModel> make_form_flow();

}  // namespace flywheel::virtualenv
