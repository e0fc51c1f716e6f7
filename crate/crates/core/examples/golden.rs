fn main() {
    let mut rng = dgp_rf::numerics::Rng::new(42);
    println!("u64_0: {}", rng.next_u64());
    println!("u64_1: {}", rng.next_u64());
    let mut rng = dgp_rf::numerics::Rng::new(42);
    println!("n0: {:?}", rng.next_normal());
    println!("n1: {:?}", rng.next_normal());
}
