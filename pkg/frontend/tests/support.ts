/** Test harness: a real service subprocess plus shared fixtures. */

import { spawn, type ChildProcess } from 'node:child_process';
import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';

import type { WorkflowData } from '../src/types.js';

const FIXTURES = fileURLToPath(new URL('../../tests/fixtures/', import.meta.url));

export function kayakEventsJsonl(): string {
  return readFileSync(`${FIXTURES}kayak_demo.jsonl`, 'utf-8');
}

export function kayakPages(): Record<string, unknown> {
  return JSON.parse(readFileSync(`${FIXTURES}sim_kayak.json`, 'utf-8'));
}

/** Two independent checks between one source and one sink. */
export function diamondWorkflow(): WorkflowData {
  return {
    timestamp: '2025-09-21T01:38:36.942Z',
    context_info: {
      goal: 'check fares and seats in parallel',
      interests: [],
      constraints: [],
      values: [],
      entities: [],
    },
    action_info: { actions: [], sites: [], phases: [], confidence: 0.9 },
    nodes: [
      {
        name: 'Gather',
        parent: [],
        children: ['CheckFares', 'CheckSeats'],
        tools: [],
        prompt: 'Purpose: gather the trip constraints.',
      },
      {
        name: 'CheckFares',
        parent: ['Gather'],
        children: ['Summarize'],
        tools: [],
        prompt: 'Purpose: check current fares.',
      },
      {
        name: 'CheckSeats',
        parent: ['Gather'],
        children: ['Summarize'],
        tools: [],
        prompt: 'Purpose: check seat availability.',
      },
      {
        name: 'Summarize',
        parent: ['CheckFares', 'CheckSeats'],
        children: [],
        tools: [],
        prompt: 'Purpose: summarize both checks.',
      },
    ],
  };
}

export interface ServiceHandle {
  baseUrl: string;
  stop(): Promise<void>;
}

/** Spawn `demoflow serve` on a free-ish port and wait until it answers. */
export async function startService(): Promise<ServiceHandle> {
  for (let attempt = 0; attempt < 5; attempt += 1) {
    const port = 20000 + Math.floor(Math.random() * 20000);
    const child = spawn('demoflow', ['serve', '--port', String(port)], {
      stdio: ['ignore', 'pipe', 'pipe'],
    });
    const baseUrl = `http://127.0.0.1:${port}`;
    const ready = await waitForService(baseUrl, child);
    if (ready) {
      return {
        baseUrl,
        stop: () =>
          new Promise((resolve) => {
            child.once('exit', () => resolve());
            child.kill('SIGTERM');
            setTimeout(() => child.kill('SIGKILL'), 2000).unref();
          }),
      };
    }
    child.kill('SIGKILL');
  }
  throw new Error('could not start demoflow serve on any port');
}

async function waitForService(baseUrl: string, child: ChildProcess): Promise<boolean> {
  const deadline = Date.now() + 10_000;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) return false; // port taken or crash
    try {
      const response = await fetch(`${baseUrl}/templates`);
      if (response.ok) return true;
    } catch {
      // not listening yet
    }
    await sleep(100);
  }
  return false;
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Poll until check() is true; throws with the label on timeout. */
export async function until(
  check: () => boolean,
  label: string,
  timeoutMs = 10_000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (check()) return;
    await sleep(20);
  }
  throw new Error(`timed out waiting for ${label}`);
}
