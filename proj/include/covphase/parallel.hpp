#pragma once

// Fixed-partition worker pool. Index ranges are split into contiguous
// blocks by worker count only, and every block writes disjoint output, so
// results do not depend on scheduling. Reductions stay on the caller.

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace covphase {

class Workers
{
  public:
	explicit Workers(int count = 1) : count_(count < 1 ? 1 : count)
	{
		for (int k = 1; k < count_; ++k)
			threads_.emplace_back([this, k] { loop(k); });
	}

	Workers(Workers const &) = delete;
	Workers &operator=(Workers const &) = delete;

	~Workers()
	{
		{
			std::lock_guard lock(mu_);
			stop_ = true;
			++generation_;
		}
		wake_.notify_all();
		for (auto &t : threads_)
			t.join();
	}

	int count() const { return count_; }

	/// Calls body(i) for i in [0, n). Blocks until all calls return.
	void for_each(std::size_t n, std::function<void(std::size_t)> const &body)
	{
		if (count_ == 1 || n < 2)
		{
			for (std::size_t i = 0; i < n; ++i)
				body(i);
			return;
		}
		{
			std::lock_guard lock(mu_);
			body_ = &body;
			n_ = n;
			pending_ = count_ - 1;
			error_ = nullptr;
			++generation_;
		}
		wake_.notify_all();
		std::exception_ptr mine;
		try
		{
			run_block(0);
		}
		catch (...)
		{
			mine = std::current_exception();
		}
		std::unique_lock lock(mu_);
		done_.wait(lock, [this] { return pending_ == 0; });
		body_ = nullptr;
		if (mine)
			std::rethrow_exception(mine);
		if (error_)
			std::rethrow_exception(error_);
	}

  private:
	void run_block(int k)
	{
		std::size_t lo = n_ * static_cast<std::size_t>(k) / static_cast<std::size_t>(count_);
		std::size_t hi = n_ * static_cast<std::size_t>(k + 1) / static_cast<std::size_t>(count_);
		for (std::size_t i = lo; i < hi; ++i)
			(*body_)(i);
	}

	void loop(int k)
	{
		unsigned long seen = 0;
		for (;;)
		{
			std::unique_lock lock(mu_);
			wake_.wait(lock, [&] { return generation_ != seen; });
			seen = generation_;
			if (stop_)
				return;
			lock.unlock();
			std::exception_ptr err;
			try
			{
				run_block(k);
			}
			catch (...)
			{
				err = std::current_exception();
			}
			lock.lock();
			if (err && !error_)
				error_ = err;
			if (--pending_ == 0)
				done_.notify_one();
		}
	}

	int count_;
	std::vector<std::thread> threads_;
	std::mutex mu_;
	std::condition_variable wake_, done_;
	std::function<void(std::size_t)> const *body_ = nullptr;
	std::size_t n_ = 0;
	int pending_ = 0;
	unsigned long generation_ = 0;
	bool stop_ = false;
	std::exception_ptr error_;
};

} // namespace covphase
