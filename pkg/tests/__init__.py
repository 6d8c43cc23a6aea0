# SPDX-FileCopyrightText: 2024-present Mo Zhou <weekenthralling@gmain.com>
#
# SPDX-License-Identifier: Apache-2.0
