#pragma once

#include <doctest.h>

#include "ctxpose/error.hpp"

// Checks that `expr` throws ctxpose::Error carrying `expected`.
#define CHECK_FAILS_WITH(expr, expected)                                     \
  do {                                                                   \
    bool thrown_ = false;                                                \
    try {                                                                \
      (void)(expr);                                                      \
    } catch (const ctxpose::Error& e_) {                                 \
      thrown_ = true;                                                    \
      CHECK_MESSAGE(e_.code() == (expected), "got " << e_.what());           \
    }                                                                    \
    CHECK_MESSAGE(thrown_, "expected an error from " #expr);             \
  } while (0)
