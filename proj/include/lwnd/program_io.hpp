#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "lwnd/lowering.hpp"

namespace lwnd::lowering {

/// Line-oriented text form:
///
///   BPROG v1 layout=4x16xG layers=L
///   LAYER <i> conv|dense|output in=.. out=.. [k=.. pad=..] src=<j|input> skip=<j|none> [folded=.. pair_theta=..]
///   IND ch=<c> theta=<t> flip=<0|1> P=[...] N=[...] [skip=<k>]
///   SCORE delta=<hex> bias=<hex> threshold=<hex>
///   EXPR
///   L<i>.<c> = <formula>
///   END
std::string format_program(const BooleanProgram& program);
BooleanProgram parse_program(std::string_view text);

void write_program(const std::filesystem::path& path, const BooleanProgram& program);
BooleanProgram read_program(const std::filesystem::path& path);

/// True if the file starts with the program magic.
bool is_program_file(const std::filesystem::path& path);

}  // namespace lwnd::lowering
