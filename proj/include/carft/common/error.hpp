// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_COMMON_ERROR_HPP_
#define CARFT_COMMON_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace carft {

// Every module reports failures through this type so callers can surface the
// originating module alongside the message.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message),
        module_(std::move(module)),
        message_(message) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string module_;
  std::string message_;
};

}  // namespace carft

#endif  // CARFT_COMMON_ERROR_HPP_
