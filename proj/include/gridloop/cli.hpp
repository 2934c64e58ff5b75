#pragma once

// Command-line front end. Exit codes: 0 success, 1 input or validation
// error, 2 numerical failure.

#include <iosfwd>

namespace gridloop {

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace gridloop
