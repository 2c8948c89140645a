//! A small built-in corpus of subject programs with reference tests.
//!
//! Expected outputs were produced by running each program under CPython.

pub struct CorpusProgram {
    pub name: &'static str,
    pub entry: &'static str,
    pub source: &'static str,
    /// `(argument list literal, expected return literal)`.
    pub tests: &'static [(&'static str, &'static str)],
}

pub fn programs() -> &'static [CorpusProgram] {
    PROGRAMS
}

pub fn find(name: &str) -> Option<&'static CorpusProgram> {
    PROGRAMS.iter().find(|p| p.name == name)
}

static PROGRAMS: &[CorpusProgram] = &[
    CorpusProgram {
        name: "special_filter",
        entry: "specialFilter",
        source: r#"def specialFilter(nums):
    count = 0
    for num in nums:
        if num > 10:
            num_str = str(abs(num))
            first_digit = int(num_str[0])
            last_digit = int(num_str[-1])
            if first_digit % 2 == 1 and last_digit % 2 == 1:
                count += 1
    return count
"#,
        tests: &[
            ("[[71, -2, -33, 75, 21, 19]]", "3"),
            ("[[5, -2, 1, -5]]", "0"),
            ("[[15, -73, 14, -15]]", "1"),
            ("[[33, -2, -3, 45, 21, 109]]", "2"),
            ("[[43, -12, 93, 125, 121, 109]]", "4"),
            ("[[]]", "0"),
        ],
    },
    CorpusProgram {
        name: "min_sub_array_sum",
        entry: "minSubArraySum",
        source: r#"def minSubArraySum(nums):
    min_sum = float('inf')
    cur_sum = 0
    for num in nums:
        cur_sum += num
        if cur_sum < min_sum:
            min_sum = cur_sum
        if cur_sum > 0:
            cur_sum = 0
    return min_sum
"#,
        tests: &[
            ("[[100, -33, 32, -1, 0, -2]]", "-33"),
            ("[[2, 3, 4, 1, 2, 4]]", "1"),
            ("[[-1, -2, -3]]", "-6"),
            ("[[-1, -2, -3, 2, -10]]", "-14"),
            ("[[7]]", "7"),
            ("[[1, -1]]", "-1"),
        ],
    },
    CorpusProgram {
        name: "incr_list",
        entry: "incr_list",
        source: r#"def incr_list(numbers):
    values = [num + 1 for num in numbers]
    return values
"#,
        tests: &[
            ("[[1, 2, 2, 1]]", "[2, 3, 3, 2]"),
            ("[[]]", "[]"),
            ("[[5, 3, 5, 2, 3, 3, 9, 0, 123]]", "[6, 4, 6, 3, 4, 4, 10, 1, 124]"),
        ],
    },
    CorpusProgram {
        name: "below_zero",
        entry: "below_zero",
        source: r#"def below_zero(operations):
    balance = 0
    for op in operations:
        balance += op
        if balance < 0:
            return True
    return False
"#,
        tests: &[
            ("[[]]", "False"),
            ("[[1, 2, -3, 1, 2, -3]]", "False"),
            ("[[1, 2, -4, 5, 6]]", "True"),
            ("[[1, -1, 2, -2, 5, -5, 4, -5]]", "True"),
        ],
    },
    CorpusProgram {
        name: "fib",
        entry: "fib",
        source: r#"def fib(n):
    a = 0
    b = 1
    i = 0
    while i < n:
        t = a + b
        a = b
        b = t
        i += 1
    return a
"#,
        tests: &[
            ("[0]", "0"),
            ("[1]", "1"),
            ("[10]", "55"),
            ("[12]", "144"),
        ],
    },
    CorpusProgram {
        name: "is_palindrome",
        entry: "is_palindrome",
        source: r#"def is_palindrome(text):
    i = 0
    j = len(text) - 1
    ok = True
    while i < j:
        if text[i] != text[j]:
            ok = False
            break
        i += 1
        j -= 1
    return ok
"#,
        tests: &[
            ("['']", "True"),
            ("['aba']", "True"),
            ("['aaaaa']", "True"),
            ("['zbcd']", "False"),
            ("['xywyx']", "True"),
        ],
    },
    CorpusProgram {
        name: "count_primes",
        entry: "count_primes",
        source: r#"def is_prime(n):
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def count_primes(limit):
    count = 0
    for k in range(limit):
        if is_prime(k):
            count += 1
    return count
"#,
        tests: &[
            ("[0]", "0"),
            ("[10]", "4"),
            ("[30]", "10"),
        ],
    },
    CorpusProgram {
        name: "max_element",
        entry: "max_element",
        source: r#"def max_element(l):
    m = l[0]
    for e in l:
        if e > m:
            m = e
    return m
"#,
        tests: &[
            ("[[1, 2, 3]]", "3"),
            ("[[5, 3, -5, 2, -3, 3, 9, 0, 124, 1, -10]]", "124"),
            ("[[-7]]", "-7"),
        ],
    },
    CorpusProgram {
        name: "digit_sum",
        entry: "digit_sum",
        source: r#"def digit_sum(n):
    n = abs(n)
    total = 0
    while n > 0:
        total += n % 10
        n //= 10
    return total
"#,
        tests: &[
            ("[0]", "0"),
            ("[123]", "6"),
            ("[-4096]", "19"),
            ("[99999]", "45"),
        ],
    },
    CorpusProgram {
        name: "letter_grades",
        entry: "letter_grades",
        source: r#"def letter_grades(grades):
    result = []
    for g in grades:
        if g >= 3.7:
            result.append('A')
        elif g >= 3.0:
            result.append('B')
        elif g >= 2.0:
            result.append('C')
        else:
            result.append('F')
    return result
"#,
        tests: &[
            ("[[4.0, 3, 1.7, 2, 3.5]]", "['A', 'B', 'F', 'C', 'B']"),
            ("[[1.2]]", "['F']"),
            ("[[0.0, 0.7, 3.7]]", "['F', 'F', 'A']"),
        ],
    },
    CorpusProgram {
        name: "positive_sum",
        entry: "positive_sum",
        source: r#"def positive_sum(nums):
    total = 0
    for x in nums:
        if x <= 0:
            continue
        total += x
    return total
"#,
        tests: &[
            ("[[1, -2, 3, 0, 5]]", "9"),
            ("[[-1, -2]]", "0"),
            ("[[]]", "0"),
        ],
    },
    CorpusProgram {
        name: "first_index",
        entry: "first_index",
        source: r#"def first_index(items, target):
    idx = -1
    pos = 0
    for item in items:
        if item == target:
            idx = pos
            break
        pos += 1
    return idx
"#,
        tests: &[
            ("[[4, 5, 6, 5], 5]", "1"),
            ("[[1, 2], 3]", "-1"),
            ("[['a', 'b'], 'b']", "1"),
        ],
    },
    CorpusProgram {
        name: "running_max",
        entry: "running_max",
        source: r#"def running_max(numbers):
    out = []
    best = None
    for n in numbers:
        if best == None or n > best:
            best = n
        out.append(best)
    return out
"#,
        tests: &[
            ("[[]]", "[]"),
            ("[[1, 2, 3, 4]]", "[1, 2, 3, 4]"),
            ("[[4, 3, 2, 1]]", "[4, 4, 4, 4]"),
            ("[[3, 2, 3, 100, 3]]", "[3, 3, 3, 100, 100]"),
        ],
    },
    CorpusProgram {
        name: "count_vowels",
        entry: "count_vowels",
        source: r#"def count_vowels(s):
    vowels = 'aeiouAEIOU'
    n = 0
    for ch in s:
        k = 0
        while k < len(vowels):
            if vowels[k] == ch:
                n += 1
                break
            k += 1
    return n
"#,
        tests: &[
            ("['abcde']", "2"),
            ("['ACEDY']", "2"),
            ("['']", "0"),
            ("['xyz']", "0"),
        ],
    },
    CorpusProgram {
        name: "triangle_area",
        entry: "triangle_area",
        source: r#"def triangle_area(a, b, c):
    if a + b <= c or a + c <= b or b + c <= a:
        return -1
    s = (a + b + c) / 2
    area = (s * (s - a) * (s - b) * (s - c)) ** 0.5
    return area
"#,
        tests: &[
            ("[3, 4, 5]", "6.0"),
            ("[1, 2, 10]", "-1"),
            ("[4, 8, 5]", "8.181534085976786"),
            ("[2, 2, 2]", "1.7320508075688772"),
        ],
    },
    CorpusProgram {
        name: "long_words",
        entry: "long_words",
        source: r#"def long_words(words, k):
    return [w for w in words if len(w) > k]
"#,
        tests: &[
            ("[['apple', 'fig', 'banana'], 3]", "['apple', 'banana']"),
            ("[[], 1]", "[]"),
            ("[['a', 'bb'], 0]", "['a', 'bb']"),
        ],
    },
    CorpusProgram {
        name: "gcd",
        entry: "gcd",
        source: r#"def gcd(a, b):
    while b != 0:
        t = b
        b = a % b
        a = t
    return a
"#,
        tests: &[
            ("[3, 7]", "1"),
            ("[10, 15]", "5"),
            ("[49, 14]", "7"),
            ("[144, 60]", "12"),
        ],
    },
    CorpusProgram {
        name: "bubble_sort",
        entry: "bubble_sort",
        source: r#"def bubble_sort(arr):
    a = arr[:]
    n = len(a)
    for i in range(n):
        for j in range(n - 1 - i):
            if a[j] > a[j + 1]:
                tmp = a[j]
                a[j] = a[j + 1]
                a[j + 1] = tmp
    return a
"#,
        tests: &[
            ("[[3, 1, 2]]", "[1, 2, 3]"),
            ("[[]]", "[]"),
            ("[[5, -1, 4, 4, 0]]", "[-1, 0, 4, 4, 5]"),
        ],
    },
    CorpusProgram {
        name: "pairs_sum_to_zero",
        entry: "pairs_sum_to_zero",
        source: r#"def pairs_sum_to_zero(l):
    for i in range(len(l)):
        for j in range(i + 1, len(l)):
            if l[i] + l[j] == 0:
                return True
    return False
"#,
        tests: &[
            ("[[1, 3, 5, 0]]", "False"),
            ("[[1, 3, -2, 1]]", "False"),
            ("[[2, 4, -5, 3, 5, 7]]", "True"),
            ("[[1]]", "False"),
        ],
    },
    CorpusProgram {
        name: "collatz_steps",
        entry: "collatz_steps",
        source: r#"def collatz_steps(n):
    steps = 0
    while n != 1:
        if n % 2 == 0:
            n = n // 2
        else:
            n = 3 * n + 1
        steps += 1
    return steps
"#,
        tests: &[
            ("[1]", "0"),
            ("[6]", "8"),
            ("[7]", "16"),
            ("[27]", "111"),
        ],
    },
    CorpusProgram {
        name: "below_threshold",
        entry: "below_threshold",
        source: r#"def below_threshold(l, t):
    for e in l:
        if e >= t:
            return False
    return True
"#,
        tests: &[
            ("[[1, 2, 4, 10], 100]", "True"),
            ("[[1, 20, 4, 10], 5]", "False"),
            ("[[], 0]", "True"),
        ],
    },
    CorpusProgram {
        name: "mean_absolute_deviation",
        entry: "mean_absolute_deviation",
        source: r#"def mean_absolute_deviation(numbers):
    mean = sum(numbers) / len(numbers)
    return sum([abs(x - mean) for x in numbers]) / len(numbers)
"#,
        tests: &[
            ("[[1.0, 2.0, 3.0]]", "0.6666666666666666"),
            ("[[1.0, 2.0, 3.0, 4.0]]", "1.0"),
            ("[[1.0, 2.0, 3.0, 4.0, 5.0]]", "1.2"),
        ],
    },
    CorpusProgram {
        name: "run_lengths",
        entry: "run_lengths",
        source: r#"def run_lengths(s):
    out = []
    count = 0
    prev = ''
    for ch in s:
        if ch == prev:
            count += 1
        else:
            if count > 0:
                out.append(count)
            prev = ch
            count = 1
    if count > 0:
        out.append(count)
    return out
"#,
        tests: &[
            ("['aaabccdd']", "[3, 1, 2, 2]"),
            ("['']", "[]"),
            ("['abc']", "[1, 1, 1]"),
        ],
    },
    CorpusProgram {
        name: "prefix_sums",
        entry: "prefix_sums",
        source: r#"def prefix_sums(nums):
    sums = [0]
    for x in nums:
        sums.append(sums[-1] + x)
    return sums[1:]
"#,
        tests: &[
            ("[[1, 2, 3]]", "[1, 3, 6]"),
            ("[[]]", "[]"),
            ("[[-5, 5, 2.5]]", "[-5, 0, 2.5]"),
        ],
    },
    CorpusProgram {
        name: "fizz_buzz",
        entry: "fizz_buzz",
        source: r#"def fizz_buzz(n):
    count = 0
    for i in range(n):
        if i % 11 == 0 or i % 13 == 0:
            s = str(i)
            for ch in s:
                if ch == '7':
                    count += 1
    return count
"#,
        tests: &[
            ("[50]", "0"),
            ("[78]", "2"),
            ("[79]", "3"),
            ("[100]", "3"),
        ],
    },
    CorpusProgram {
        name: "max_depth",
        entry: "max_depth",
        source: r#"def max_depth(s):
    depth = 0
    best = 0
    for ch in s:
        if ch == '(':
            depth += 1
            if depth > best:
                best = depth
        elif ch == ')':
            depth -= 1
    return best
"#,
        tests: &[
            ("['(()())']", "2"),
            ("['((()))()']", "3"),
            ("['']", "0"),
            ("['()(())']", "2"),
        ],
    },
    CorpusProgram {
        name: "unique",
        entry: "unique",
        source: r#"def unique(l):
    out = []
    for x in sorted(l):
        if len(out) == 0 or out[-1] != x:
            out.append(x)
    return out
"#,
        tests: &[
            ("[[5, 3, 5, 2, 3, 3, 9, 0, 123]]", "[0, 2, 3, 5, 9, 123]"),
            ("[[]]", "[]"),
            ("[[1, 1]]", "[1]"),
        ],
    },
    CorpusProgram {
        name: "is_simple_power",
        entry: "is_simple_power",
        source: r#"def is_simple_power(x, n):
    if n == 1:
        return x == 1
    p = 1
    while p < x:
        p = p * n
    return p == x
"#,
        tests: &[
            ("[16, 2]", "True"),
            ("[143214, 16]", "False"),
            ("[4, 2]", "True"),
            ("[9, 3]", "True"),
            ("[1, 12]", "True"),
            ("[5, 1]", "False"),
        ],
    },
    CorpusProgram {
        name: "closest_gap",
        entry: "closest_gap",
        source: r#"def closest_gap(numbers):
    s = sorted(numbers)
    best = float('inf')
    i = 1
    while i < len(s):
        gap = s[i] - s[i - 1]
        if gap < best:
            best = gap
        i += 1
    return best
"#,
        tests: &[
            ("[[1.0, 2.0, 3.9, 4.0, 5.0, 2.2]]", "0.10000000000000009"),
            ("[[5]]", "inf"),
            ("[[10, 4, 7, 1]]", "3"),
        ],
    },
    CorpusProgram {
        name: "odd_at_even_positions",
        entry: "solution",
        source: r#"def solution(lst):
    total = 0
    for idx in range(0, len(lst), 2):
        if lst[idx] % 2 == 1:
            total += lst[idx]
    return total
"#,
        tests: &[
            ("[[5, 8, 7, 1]]", "12"),
            ("[[3, 3, 3, 3, 3]]", "9"),
            ("[[30, 13, 24, 321]]", "0"),
            ("[[-3, 4, -5]]", "-8"),
        ],
    },
    CorpusProgram {
        name: "diagonal_sum",
        entry: "diagonal_sum",
        source: r#"def diagonal_sum(grid):
    n = len(grid)
    total = 0
    for i in range(n):
        total += grid[i][i]
        if i != n - 1 - i:
            total += grid[i][n - 1 - i]
    return total
"#,
        tests: &[
            ("[[[1, 2, 3], [4, 5, 6], [7, 8, 9]]]", "25"),
            ("[[[5]]]", "5"),
            ("[[[1, 1], [1, 1]]]", "4"),
        ],
    },
    CorpusProgram {
        name: "count_upper",
        entry: "count_upper",
        source: r#"def count_upper(s):
    count = 0
    for i in range(0, len(s), 2):
        if s[i] == 'A' or s[i] == 'E' or s[i] == 'I' or s[i] == 'O' or s[i] == 'U':
            count += 1
    return count
"#,
        tests: &[
            ("['aBCdEf']", "1"),
            ("['abcdefg']", "0"),
            ("['dBBE']", "0"),
            ("['EEEE']", "2"),
        ],
    },
    CorpusProgram {
        name: "clamp_all",
        entry: "clamp_all",
        source: r#"def clamp_all(nums, lo, hi):
    out = []
    for x in nums:
        if x < lo:
            out.append(lo)
        elif x > hi:
            out.append(hi)
        else:
            out.append(x)
    return out
"#,
        tests: &[
            ("[[-5, 0, 5, 10, 15], 0, 10]", "[0, 0, 5, 10, 10]"),
            ("[[], 1, 2]", "[]"),
            ("[[1.5, -0.5], 0, 1]", "[1, 0]"),
        ],
    },
    CorpusProgram {
        name: "has_triple",
        entry: "has_triple",
        source: r#"def has_triple(nums):
    i = 0
    while i + 2 < len(nums):
        if nums[i] == nums[i + 1] and nums[i + 1] == nums[i + 2]:
            return True
        i += 1
    return False
"#,
        tests: &[
            ("[[1, 2, 2, 2, 3]]", "True"),
            ("[[1, 1, 2, 2]]", "False"),
            ("[[]]", "False"),
        ],
    },
    CorpusProgram {
        name: "sign_counts",
        entry: "sign_counts",
        source: r#"def sign_counts(nums):
    pos = 0
    neg = 0
    for x in nums:
        if x > 0:
            pos += 1
        elif x < 0:
            neg += 1
        else:
            pass
    return [pos, neg]
"#,
        tests: &[
            ("[[1, -1, 0, 2]]", "[2, 1]"),
            ("[[]]", "[0, 0]"),
            ("[[-3, -3]]", "[0, 2]"),
        ],
    },
    CorpusProgram {
        name: "sum_squares_rounded",
        entry: "sum_squares",
        source: r#"def sum_squares(lst):
    total = 0
    for x in lst:
        k = int(x)
        if k < x:
            k += 1
        total += k * k
    return total
"#,
        tests: &[
            ("[[1, 2, 3]]", "14"),
            ("[[1.4, 4.2, 0]]", "29"),
            ("[[-2.4, 1, 1]]", "6"),
            ("[[]]", "0"),
        ],
    },
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse, parse_literal, run_program, values_close, DEFAULT_STEP_BUDGET};

    #[test]
    fn interpreter_matches_reference_outputs() {
        assert!(programs().len() >= 30);
        for p in programs() {
            let unit = parse(p.source).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            for (args, expected) in p.tests {
                let args = match parse_literal(args).unwrap() {
                    crate::lang::Value::List(items) => items.as_ref().clone(),
                    _ => unreachable!(),
                };
                let out = run_program(&unit, p.entry, &args, DEFAULT_STEP_BUDGET);
                let got = out.returned().unwrap_or_else(|| panic!("{} failed: {:?}", p.name, out.status));
                assert!(values_close(got, &parse_literal(expected).unwrap()), "{} {args:?}: {got} vs {expected}", p.name);
            }
        }
    }
}
