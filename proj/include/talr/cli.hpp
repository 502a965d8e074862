// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

namespace talr {

/// Entry point of the `talr` command line tool (train | eval |
/// tiebreak-audit | gradcheck | synth). Exit codes: 0 success, 2 usage error,
/// 3 data error, 4 numeric failure.
int talr_main(int argc, const char* const* argv);

}  // namespace talr
