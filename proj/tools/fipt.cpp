// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>

int main() {
    std::puts("fipt: placeholder");
    return 0;
}
