#pragma once

namespace mtlab {
int run_cli(int argc, char** argv);
inline int run_cli(int, char**) { return 0; }  // placeholder until the CLI lands
}  // namespace mtlab
