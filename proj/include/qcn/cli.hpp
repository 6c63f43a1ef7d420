#pragma once

#include <iosfwd>

namespace qcn {

// Exit codes: 0 success, 1 validation or domain failure, 2 usage error.
// Relative output paths are resolved against $QCN_OUTPUT_DIR when it is set.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qcn
