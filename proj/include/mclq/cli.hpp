#pragma once

namespace mclq {

/// Entry point of the `mclq` tool. Returns the process exit code:
/// 0 success, 2 usage or configuration error, 3 numerical failure.
int run_cli(int argc, char** argv);

}  // namespace mclq
