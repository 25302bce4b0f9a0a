// Copyright 2026 The m11seg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef M11SEG_ERROR_HPP
#define M11SEG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace m11seg {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class InvalidLabel : public Error {
public:
    using Error::Error;
};

class FileNotFound : public Error {
public:
    using Error::Error;
};

class MultiChannelInput : public Error {
public:
    MultiChannelInput(const std::string& path, int channels)
        : Error("multi-channel input: '" + path + "' has " + std::to_string(channels) +
                " channels") {}
};

class UnreadableFormat : public Error {
public:
    using Error::Error;
};

class CorruptFile : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

/// Weight archive does not fit the model; carries the offending tensor name.
class WeightMismatch : public Error {
public:
    WeightMismatch(std::string layer, const std::string& detail)
        : Error("weight mismatch at '" + layer + "': " + detail), layer_(std::move(layer)) {}
    const std::string& layer() const noexcept { return layer_; }

private:
    std::string layer_;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace m11seg

#endif  // M11SEG_ERROR_HPP
