#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "stork/crypto.hpp"

namespace stork {

/// args excludes the program name. Returns the process exit code.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string encode_keypair(const RsaKeyPair& keypair);
RsaKeyPair decode_keypair(std::string_view xml);

}  // namespace stork
