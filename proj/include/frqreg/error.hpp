/*******************************************************************************
* Copyright 2026 The frqreg Authors
*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     http://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
*******************************************************************************/

#pragma once

#include <stdexcept>
#include <string>

namespace frqreg {

/// Process exit codes used by the command line tool.
enum class ExitCode : int {
    ok = 0,
    validation = 1,
    numeric = 2,
    io = 3,
};

/// Base of every error thrown by the library. Each subclass maps onto one of
/// the CLI exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual ExitCode exit_code() const noexcept { return ExitCode::validation; }
};

#define FRQREG_DEFINE_ERROR(Name, Code)                                       \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
        ExitCode exit_code() const noexcept override { return Code; }         \
    };

FRQREG_DEFINE_ERROR(DimensionError, ExitCode::validation)
FRQREG_DEFINE_ERROR(ContractError, ExitCode::validation)
FRQREG_DEFINE_ERROR(ParameterError, ExitCode::validation)
FRQREG_DEFINE_ERROR(LabelError, ExitCode::validation)
FRQREG_DEFINE_ERROR(ConfigError, ExitCode::validation)
FRQREG_DEFINE_ERROR(SpecError, ExitCode::validation)
FRQREG_DEFINE_ERROR(DataError, ExitCode::validation)
FRQREG_DEFINE_ERROR(FormatError, ExitCode::validation)
FRQREG_DEFINE_ERROR(DegenerateBatchError, ExitCode::validation)
FRQREG_DEFINE_ERROR(NumericError, ExitCode::numeric)
FRQREG_DEFINE_ERROR(IoError, ExitCode::io)

#undef FRQREG_DEFINE_ERROR

}  // namespace frqreg
